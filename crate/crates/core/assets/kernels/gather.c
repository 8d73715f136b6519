void gather(float* a, int* idx, float* b, int n) {
  for (int i = 0; i < n; i++) {
    b[i] = a[idx[i]];
  }
}
