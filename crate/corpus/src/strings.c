/* Pointer table of strings, walked and measured. */
#include "runtime.h"

static const char *const words[] = {
    "disassembly", "is", "not", "injective", "but", "reassembly", "must",
    "still", "work",
};

int main(void) {
    u64 total = 0;
    for (u64 i = 0; i < sizeof words / sizeof words[0]; i++) {
        put_str(words[i]);
        put_char(' ');
        total += str_len(words[i]);
    }
    put_int((i64)total);
    put_char('\n');
    return 0;
}
