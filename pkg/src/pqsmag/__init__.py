"""Field tracking with a continuously monitored spin."""
