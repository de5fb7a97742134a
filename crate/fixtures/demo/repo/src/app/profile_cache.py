class ProfileCache:
    def __init__(self):
        self.entries = {}

    def get(self, user_id):
        return self.entries.get(user_id)

    def put(self, user_id, user):
        self.entries[user_id] = user
