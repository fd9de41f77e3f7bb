/* Euclid's gcd and the derived lcm over a fixed pair table. */
#include "runtime.h"

static const i64 pairs[][2] = {
    {12, 18}, {1071, 462}, {97, 89}, {1000000, 2048}, {13 * 17, 17 * 19},
};

static i64 gcd(i64 a, i64 b) {
    while (b) {
        i64 t = a % b;
        a = b;
        b = t;
    }
    return a;
}

int main(void) {
    for (u64 i = 0; i < sizeof pairs / sizeof pairs[0]; i++) {
        i64 a = pairs[i][0], b = pairs[i][1];
        i64 g = gcd(a, b);
        put_int(g);
        put_char(' ');
        put_int(a / g * b);
        put_char('\n');
    }
    return 0;
}
