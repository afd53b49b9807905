# Tests package for the quasi-rational approximation toolkit
