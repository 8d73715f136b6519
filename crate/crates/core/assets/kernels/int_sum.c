void int_sum(int* a, int* out, int n) {
  int s = 0;
  for (int i = 0; i < n; i++) {
    s += a[i];
  }
  out[0] = s;
}
