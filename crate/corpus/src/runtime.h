/* Freestanding runtime for the round-trip corpus: raw syscalls, a few
 * output helpers, and the program entry point. No libc. */
#ifndef RUNTIME_H
#define RUNTIME_H

typedef unsigned long u64;
typedef long i64;

static inline i64 sys_write(int fd, const void *buf, u64 len) {
    i64 ret;
    __asm__ volatile("syscall"
                     : "=a"(ret)
                     : "a"(1L), "D"((i64)fd), "S"(buf), "d"(len)
                     : "rcx", "r11", "memory");
    return ret;
}

static inline void sys_exit(int code) {
    __asm__ volatile("syscall" : : "a"(60L), "D"((i64)code) : "rcx", "r11");
    __builtin_unreachable();
}

static u64 str_len(const char *s) {
    u64 n = 0;
    while (s[n])
        n++;
    return n;
}

static void put_str(const char *s) { sys_write(1, s, str_len(s)); }

static void put_char(char c) { sys_write(1, &c, 1); }

static void put_int(i64 v) {
    char buf[24];
    int i = 24;
    u64 u = v < 0 ? 0ul - (u64)v : (u64)v;
    do {
        buf[--i] = (char)('0' + (u % 10));
        u /= 10;
    } while (u);
    if (v < 0)
        buf[--i] = '-';
    sys_write(1, buf + i, (u64)(24 - i));
}

int main(void);

void _start(void) { sys_exit(main()); }

#endif
