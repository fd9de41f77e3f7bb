/* Collatz step counts for 1..30. */
#include "runtime.h"

int main(void) {
    for (i64 n = 1; n <= 30; n++) {
        i64 x = n, steps = 0;
        while (x != 1) {
            x = (x & 1) ? 3 * x + 1 : x / 2;
            steps++;
        }
        put_int(n);
        put_char(':');
        put_int(steps);
        put_char(n == 30 ? '\n' : ' ');
    }
    return 0;
}
