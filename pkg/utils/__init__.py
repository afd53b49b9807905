# Shared utilities: configuration, logging, errors, validation, caching and fan-out
