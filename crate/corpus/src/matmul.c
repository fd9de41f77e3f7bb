/* 3x3 integer matrix product, row per line. */
#include "runtime.h"

static const i64 a[3][3] = {{1, 2, 3}, {4, 5, 6}, {7, 8, 9}};
static const i64 b[3][3] = {{9, 8, 7}, {6, 5, 4}, {3, 2, 1}};
static i64 c[3][3];

int main(void) {
    for (int i = 0; i < 3; i++)
        for (int j = 0; j < 3; j++)
            for (int k = 0; k < 3; k++)
                c[i][j] += a[i][k] * b[k][j];
    for (int i = 0; i < 3; i++) {
        for (int j = 0; j < 3; j++) {
            if (j)
                put_char(' ');
            put_int(c[i][j]);
        }
        put_char('\n');
    }
    return 0;
}
