"""CIP-stabilized nonconforming virtual elements for 2D advection-diffusion-reaction."""
