void rowsum(float* A, float* r, int n) {
  for (int i = 0; i < n; i++) {
    float t = 0.0f;
    for (int j = 0; j < n; j++) {
      t += A[i*n + j];
    }
    r[i] = t;
  }
}
