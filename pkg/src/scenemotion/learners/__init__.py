"""Base learners: SMO-trained RBF SVMs and small numpy neural networks."""
