def shout(name: str) -> str:
    greeting = f"hello {name}"
    return greeting.upper() + '!'
