/* Mutual recursion and an accumulator threaded through helpers. */
#include "runtime.h"

static int is_odd(int n);

static int is_even(int n) { return n == 0 ? 1 : is_odd(n - 1); }

static int is_odd(int n) { return n == 0 ? 0 : is_even(n - 1); }

static i64 sum_to(i64 n) { return n <= 0 ? 0 : n + sum_to(n - 1); }

int main(void) {
    for (int n = 0; n < 8; n++) {
        put_int(is_even(n));
        put_char(' ');
    }
    put_int(sum_to(100));
    put_char('\n');
    return 0;
}
