def cube(x):
    return x * x * x


print(cube(3))
