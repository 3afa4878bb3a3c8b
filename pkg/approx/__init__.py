# Feature-based policy evaluation
