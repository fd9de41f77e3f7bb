/* Hand-rolled popcount, parity, and 32-bit reversal. */
#include "runtime.h"

static int popcount(u64 v) {
    int n = 0;
    while (v) {
        v &= v - 1;
        n++;
    }
    return n;
}

static u64 reverse32(u64 v) {
    u64 r = 0;
    for (int i = 0; i < 32; i++) {
        r = (r << 1) | (v & 1);
        v >>= 1;
    }
    return r;
}

int main(void) {
    static const u64 samples[] = {0, 1, 0xff, 0xdeadbeef, 0x12345678, 0xffffffff};
    for (u64 i = 0; i < sizeof samples / sizeof samples[0]; i++) {
        u64 v = samples[i];
        put_int(popcount(v));
        put_char(' ');
        put_int(popcount(v) & 1);
        put_char(' ');
        put_int((i64)reverse32(v));
        put_char('\n');
    }
    return 0;
}
