"""Dynamic obstacle avoidance environments and TD3-family agents."""
