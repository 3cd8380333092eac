typedef void (*callback)(int);

extern void *foreign_value(void);
extern int foreign_invoke(callback fn, int arg);

static int seen = 0;

static void record(int v) {
  seen += v;
}

int main(void) {
  void *handle = foreign_value();
  callback cb = (callback)handle;
  foreign_invoke(record, 5);
  foreign_invoke(cb, 1);
  return seen;
}
