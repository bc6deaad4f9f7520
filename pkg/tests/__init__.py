# Test suite for sdlalab
