// Placeholder; replaced by the full CLI once the trainer lands.
int main() { return 0; }
