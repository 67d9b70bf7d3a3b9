#include <stdlib.h>

void free_and_null(void **ptr)
{
    if (ptr != NULL) {
        free(*ptr);
        *ptr = NULL;
    }
}
