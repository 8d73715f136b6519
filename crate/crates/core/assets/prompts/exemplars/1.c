void scale(float* x, float* y, int n) {
  for (int i = 0; i < n; i++) {
    y[i] = 2.0f * x[i];
  }
}
