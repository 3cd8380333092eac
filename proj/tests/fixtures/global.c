int counter = 0;
static int limit = 3;

void bump(int by) {
  counter += by;
  counter *= 1;
}

int main(void) {
  for (int i = 0; i < limit; i++)
    bump(i + 1);
  return counter;
}
