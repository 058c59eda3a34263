"""Big-M tightening for DC optimal transmission switching."""
