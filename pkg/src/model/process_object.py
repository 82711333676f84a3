class ProcessObject(dict):
    """
    Dictionary container carrying the state of one grid level through the
    experiment pipeline.

    Stages read and write keys such as 'model', 'level', 'grid', 'operator',
    'eigenvalues', 'counting_function', 'samples' and 'fit'.
    """

    def __init__(self, **initial):
        super().__init__(**initial)
