"""jamshield: UAV anti-jamming link simulator with multi-agent PPO recovery."""
