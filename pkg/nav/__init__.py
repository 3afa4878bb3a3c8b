# Underwater robot navigation environment
