"""imkit inference exceptions."""
