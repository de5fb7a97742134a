from app.db import fetch_row, open_connection
from app.profile_cache import ProfileCache


class UserRecord:
    def __init__(self, user_id, name):
        self.user_id = user_id
        self.name = name


def load_user(conn, user_id):
    row = fetch_row(conn, 'users', user_id)
    if row is None:
        return None
    return UserRecord(row[0], row[1])


def load_user_profile(conn, cache, user_id):
    cached = cache.get(user_id)
    if cached is not None:
        return cached
    user = load_user(conn, user_id)
    cache.put(user_id, user)
    return user
