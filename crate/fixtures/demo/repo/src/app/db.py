import sqlite3

DEFAULT_TIMEOUT = 5


def open_connection(path):
    return sqlite3.connect(path, timeout=DEFAULT_TIMEOUT)


def fetch_row(conn, table, key):
    cursor = conn.execute(f'select * from {table} where id = ?', (key,))
    return cursor.fetchone()
