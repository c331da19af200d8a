"""Services for RLCk MOR: netlists, MNA, reduction and frequency analysis."""
