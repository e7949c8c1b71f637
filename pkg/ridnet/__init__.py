"""Graph-convolutional denoising of low-dose CT volumes."""
