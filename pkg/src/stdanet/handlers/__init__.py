from .log_handlers import handle_metric_log
from .table_handlers import handle_eval_table
from .image_handlers import handle_heatmaps, handle_missing
