#include <stdio.h>

static long factorial(int n) {
    long acc = 1;
    for (int i = 2; i <= n; i++) {
        acc *= i;
    }
    return acc;
}

int main(void) {
    printf("%ld\n", factorial(6));
    return 0;
}
