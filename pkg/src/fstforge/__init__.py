"""Transducer induction from recurrent-network hidden states."""
