def parse_range(text):
    """Parse "7" or "3-7" into an inclusive (low, high) pair."""
    text = text.strip()
    if "-" in text:
        parts = text.split("-")
        low = int(parts[0].strip())
        high = int(parts[1].strip())
        if low > high:
            raise ValueError("range is reversed: " + text)
        return (low, high)
    else:
        value = int(text)
        return (value, value)
