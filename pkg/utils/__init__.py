# Utils Package
# Numerics, neighbor search, evaluation, configuration and file helpers
