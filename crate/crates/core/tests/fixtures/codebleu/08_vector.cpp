#include <vector>

int total(const std::vector<int>& v) {
    int acc = 0;
    for (int x : v) {
        acc += x;
    }
    return acc;
}
