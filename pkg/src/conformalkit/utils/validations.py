from typing import Any


def _type_name(value: Any) -> str:  # noqa: ANN401
    match value:
        case bool():
            return "bool"
        case int() | float():
            return "number"
        case _:
            return type(value).__name__


def is_sub_struct(reference: dict, candidate: dict) -> bool:
    """Check that a dictionary only uses keys and value types of a reference.

    Keys missing from the candidate are allowed, so a partial settings file
    can override a subset of the defaults. Integers and floats are treated as
    the same type; list items are not inspected.

    Args:
        reference (dict): The reference dictionary (the defaults).
        candidate (dict): The dictionary to check.

    Returns:
        bool: True if every candidate key exists in the reference with a value
            of the same type, recursively.

    Examples:
        >>> is_sub_struct({}, {})
        True
        >>> is_sub_struct({'a': 1, 'b': 'foo'}, {'a': 2})
        True
        >>> is_sub_struct({'a': 0.1}, {'a': 1})
        True
        >>> is_sub_struct({'a': 1}, {'b': 1})
        False
        >>> is_sub_struct({'a': 1}, {'a': 'foo'})
        False
        >>> is_sub_struct({'a': True}, {'a': 1})
        False
        >>> is_sub_struct({'a': [1]}, {'a': ['foo', 'waldo']})
        True
        >>> is_sub_struct({'a': {'b': 1}}, {'a': {'c': 2}})
        False
    """
    for key, value in candidate.items():
        if key not in reference:
            return False
        expected = reference[key]
        if isinstance(expected, dict) or isinstance(value, dict):
            if not (
                isinstance(expected, dict)
                and isinstance(value, dict)
                and is_sub_struct(expected, value)
            ):
                return False
        elif _type_name(expected) != _type_name(value):
            return False
    return True


def deep_merge(base: dict, override: dict) -> dict:
    """Merge ``override`` into a copy of ``base``, recursing into tables.

    Examples:
        >>> deep_merge({'a': {'b': 1, 'c': 2}}, {'a': {'c': 3}})
        {'a': {'b': 1, 'c': 3}}
    """
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged
