"""Large deviations toolkit for multitype Galton-Watson trees."""
