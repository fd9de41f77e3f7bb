/* Fixed-size ring buffer exercised by a scripted push/pop sequence. */
#include "runtime.h"

static i64 ring[8];
static int head, tail, count;

static void push(i64 v) {
    if (count == 8)
        return;
    ring[tail] = v;
    tail = (tail + 1) & 7;
    count++;
}

static i64 pop(void) {
    if (count == 0)
        return -1;
    i64 v = ring[head];
    head = (head + 1) & 7;
    count--;
    return v;
}

int main(void) {
    for (i64 v = 1; v <= 10; v++)
        push(v * v);
    for (int i = 0; i < 5; i++) {
        put_int(pop());
        put_char(' ');
    }
    push(111);
    push(222);
    while (count) {
        put_int(pop());
        put_char(count ? ' ' : '\n');
    }
    return 0;
}
