"""Multi-point quasi-rational approximants for eigenvalues of x^a + lambda x^b."""
