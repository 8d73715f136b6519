void scaled_copy(float* x, float* y, float alpha, int n) {
  float t;
  for (int i = 0; i < n; i++) {
    t = alpha * x[i];
    y[i] = t + y[i];
  }
}
