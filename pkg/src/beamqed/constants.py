"""Physical constants used throughout the package (single source of truth)."""

K_B = 1.380649e-23  # Boltzmann constant, J/K (CODATA, exact)
ATOMIC_MASS_UNIT = 1.66053906892e-27  # kg

# Mean atomic masses (u).  Cs is monoisotopic; for Rb the published beam
# speeds are only reproduced by the natural-abundance mean mass, so that is
# what the presets use.  A config file can override the mass directly.
SPECIES_MASS_U = {
    "Cs": 132.90545196,
    "Rb": 85.4678,
}

SPECIES_BY_WAVELENGTH_NM = {852: "Cs", 780: "Rb"}


def species_mass_kg(species: str) -> float:
    return SPECIES_MASS_U[species] * ATOMIC_MASS_UNIT
