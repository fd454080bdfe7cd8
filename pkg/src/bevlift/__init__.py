"""Camera-only BEV lifting, pooling, losses and metrics."""
