void dot(float* a, float* b, float* out, int n) {
  float s = 0.0f;
  for (int i = 0; i < n; i++) {
    s += a[i] * b[i];
  }
  out[0] = s;
}
