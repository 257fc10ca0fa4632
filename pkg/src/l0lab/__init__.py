"""Binary classification under sparse (l0) adversarial attacks: a numerical laboratory."""
