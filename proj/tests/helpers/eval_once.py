#!/usr/bin/env python3
"""Mock evaluator that answers one request and exits."""
import sys

sys.stdin.readline()
print('{"loss": 1.0}', flush=True)
