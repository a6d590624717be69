"""Range coding and the .nvsc stream format."""
