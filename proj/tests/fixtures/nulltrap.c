int store(int *slot, int value) {
  *slot = value;
  return value;
}

int main(void) {
  int x = 0;
  store(&x, 1);
  return store((int *)0, 2);
}
