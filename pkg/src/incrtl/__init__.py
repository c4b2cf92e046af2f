"""Data-pooling transfer learning for linear regression with new input features."""
