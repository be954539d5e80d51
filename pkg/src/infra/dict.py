from typing import Any, Optional, Sequence


def get_nested(json: dict | list | Any, keypath: Sequence[str | int]) -> Optional[Any]:
    """Walks dict keys and list indices, returns None when any step is missing."""
    if not keypath:
        return json

    key, rest = keypath[0], keypath[1:]
    if isinstance(key, int):
        if not isinstance(json, list) or not -len(json) <= key < len(json):
            return None
        value = json[key]
    else:
        if not isinstance(json, dict):
            return None
        value = json.get(key)

    if not rest:
        return value
    # we need to go deeper
    return get_nested(value, rest)
