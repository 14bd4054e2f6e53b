// Placeholder; the full acceptance suite is added with the harness tests.
int main() { return 1; }
