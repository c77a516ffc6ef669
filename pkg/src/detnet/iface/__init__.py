"""Controller interfaces: config records, persistence, HTTP server and CLI."""
