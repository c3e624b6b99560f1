def power_of_two(e):
    result = 1
    for _ in range(e):
        result *= 2
    return result


print(power_of_two(10))
