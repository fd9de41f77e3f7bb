/* Insertion sort over a fixed array, printed before and after. */
#include "runtime.h"

static i64 values[] = {42, -7, 19, 0, 88, -3, 56, 11, 73, -21, 5, 99, 34, 2};

static void print_all(void) {
    for (u64 i = 0; i < sizeof values / sizeof values[0]; i++) {
        if (i)
            put_char(' ');
        put_int(values[i]);
    }
    put_char('\n');
}

int main(void) {
    const int n = sizeof values / sizeof values[0];
    print_all();
    for (int i = 1; i < n; i++) {
        i64 key = values[i];
        int j = i - 1;
        while (j >= 0 && values[j] > key) {
            values[j + 1] = values[j];
            j--;
        }
        values[j + 1] = key;
    }
    print_all();
    return 0;
}
