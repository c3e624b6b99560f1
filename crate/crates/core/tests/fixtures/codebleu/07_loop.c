int main(void) {
    int i = 0;
    while (i < 10) {
        if (i % 3 == 0) {
            i += 2;
        } else {
            i++;
        }
    }
    return i;
}
