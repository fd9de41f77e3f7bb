/* Sieve of Eratosthenes: primes below 100, one line. */
#include "runtime.h"

static char composite[100];

int main(void) {
    for (int p = 2; p * p < 100; p++) {
        if (composite[p])
            continue;
        for (int m = p * p; m < 100; m += p)
            composite[m] = 1;
    }
    int first = 1;
    for (int n = 2; n < 100; n++) {
        if (composite[n])
            continue;
        if (!first)
            put_char(' ');
        put_int(n);
        first = 0;
    }
    put_char('\n');
    return 0;
}
