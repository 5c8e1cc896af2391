"""Toy-scale jamming detector feeding (l1, l2) logits to the DET variant."""
