"""Secure integer and floating-point computation among simulated enclave parties."""
