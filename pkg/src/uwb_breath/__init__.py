"""IR-UWB breathing-rate toolkit."""
