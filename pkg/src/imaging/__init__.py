"""PNG I/O, bicubic resampling, image metrics and the synthetic corpus."""
