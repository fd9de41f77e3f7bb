/* Binary search in a sorted table; prints index or -1 for each probe. */
#include "runtime.h"

static const i64 table[] = {2,  3,  5,  7,  11, 13, 17, 19,
                            23, 29, 31, 37, 41, 43, 47, 53};
static const i64 probes[] = {2, 10, 23, 53, 54, 1, 31, 42};

static int find(i64 key) {
    int lo = 0, hi = sizeof table / sizeof table[0] - 1;
    while (lo <= hi) {
        int mid = (lo + hi) / 2;
        if (table[mid] == key)
            return mid;
        if (table[mid] < key)
            lo = mid + 1;
        else
            hi = mid - 1;
    }
    return -1;
}

int main(void) {
    for (u64 i = 0; i < sizeof probes / sizeof probes[0]; i++) {
        if (i)
            put_char(' ');
        put_int(find(probes[i]));
    }
    put_char('\n');
    return 0;
}
