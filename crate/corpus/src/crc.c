/* Byte-wise CRC-32 (reflected, poly 0xEDB88320) over fixed messages. */
#include "runtime.h"

static u64 crc32(const char *s) {
    u64 crc = 0xffffffff;
    for (u64 i = 0; s[i]; i++) {
        crc ^= (unsigned char)s[i];
        for (int b = 0; b < 8; b++)
            crc = (crc >> 1) ^ (0xEDB88320 & (0ul - (crc & 1)));
    }
    return crc ^ 0xffffffff;
}

int main(void) {
    static const char *const msgs[] = {"", "a", "abc", "123456789",
                                       "the quick brown fox"};
    for (u64 i = 0; i < sizeof msgs / sizeof msgs[0]; i++) {
        put_int((i64)crc32(msgs[i]));
        put_char('\n');
    }
    return 0;
}
