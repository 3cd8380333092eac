struct Point {
  int x;
  int y;
};

struct Rect {
  struct Point min;
  struct Point max;
  unsigned char flags : 3;
  unsigned char kind : 5;
  short id;
};

static int area(const struct Rect *r) {
  int w = r->max.x - r->min.x;
  int h = r->max.y - r->min.y;
  return w * h;
}

int main(void) {
  struct Rect r = {{1, 2}, {7, 9}, 5, 17, -3};
  int values[4] = {3, 1, 4, 1};
  int a = area(&r);
  for (int i = 0; i < 4; i++)
    a += values[i];
  return a + r.flags + r.kind + r.id;
}
