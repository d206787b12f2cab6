"""Protocol logic for the dual-server scheme: query, shuffle, and update."""
