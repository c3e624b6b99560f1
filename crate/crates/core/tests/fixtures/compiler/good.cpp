#include <iostream>
#include <vector>

int main() {
    std::vector<int> xs{1, 2, 3};
    int sum = 0;
    for (int x : xs) {
        sum += x;
    }
    std::cout << sum << std::endl;
    return 0;
}
