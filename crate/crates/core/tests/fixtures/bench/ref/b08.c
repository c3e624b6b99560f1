#include <stdio.h>

static int digit_sum(int n) {
    int total = 0;
    while (n > 0) {
        total += n % 10;
        n /= 10;
    }
    return total;
}

int main(void) {
    printf("%d\n", digit_sum(9875));
    return 0;
}
