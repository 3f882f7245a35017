# Feature slices (vertical architecture)

