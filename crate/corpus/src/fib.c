/* Iterative Fibonacci: prints the first 20 terms. */
#include "runtime.h"

int main(void) {
    i64 a = 0, b = 1;
    for (int i = 0; i < 20; i++) {
        put_int(a);
        put_char(i == 19 ? '\n' : ' ');
        i64 next = a + b;
        a = b;
        b = next;
    }
    return 0;
}
