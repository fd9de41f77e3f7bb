/* Dense switch dispatch (compiles to a jump table) over opcodes. */
#include "runtime.h"

static i64 step(i64 acc, int op, i64 arg) {
    switch (op) {
    case 0:
        return acc + arg;
    case 1:
        return acc - arg;
    case 2:
        return acc * arg;
    case 3:
        return arg ? acc / arg : acc;
    case 4:
        return acc ^ arg;
    case 5:
        return acc & arg;
    case 6:
        return acc | arg;
    case 7:
        return acc << (arg & 7);
    case 8:
        return acc >> (arg & 7);
    case 9:
        return -acc;
    default:
        return acc;
    }
}

int main(void) {
    static const int script[][2] = {{0, 100}, {2, 3},  {1, 37}, {4, 0x55},
                                    {5, 0xf0}, {6, 9},  {7, 2},  {8, 1},
                                    {9, 0},    {3, 11}, {0, 7},  {12, 5}};
    i64 acc = 1;
    for (u64 i = 0; i < sizeof script / sizeof script[0]; i++) {
        acc = step(acc, script[i][0], script[i][1]);
        put_int(acc);
        put_char('\n');
    }
    return 0;
}
