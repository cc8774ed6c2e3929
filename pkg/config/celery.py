from celery import Celery

app = Celery("timecourse")

# Берём настройки Celery из config.settings с префиксом CELERY_
app.config_from_object("config.settings", namespace="CELERY")

# Задачи прогона реплик живут в studies/tasks.py
app.autodiscover_tasks(["studies"])
