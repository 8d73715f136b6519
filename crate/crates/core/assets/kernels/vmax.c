void vmax(int* a, int* out, int n) {
  int m = a[0];
  for (int i = 1; i < n; i++) {
    if (a[i] > m)
      m = a[i];
  }
  out[0] = m;
}
