def triangle(n):
    return n * (n + 1) // 2


print(triangle(7))
